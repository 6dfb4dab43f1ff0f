#include "effpop/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return effpop::run_cli(argc, argv, std::cout, std::cerr); }
