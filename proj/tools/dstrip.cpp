#include <iostream>

#include "dstrip/commands.hpp"

int main(int argc, char** argv) { return dstrip::cli::run_subcommand(argc, argv, std::cout, std::cerr); }
