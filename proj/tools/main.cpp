#include <iostream>

#include "stabcheck_cli.hpp"

int main(int argc, char** argv) { return stabcheck::cli::run_cli(argc, argv, std::cout, std::cerr); }
