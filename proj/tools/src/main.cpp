#include <iostream>

#include "npmean_cli/commands.hpp"

int main(int argc, char** argv) { return npmean::cli::run(argc, argv, std::cout, std::cerr); }
