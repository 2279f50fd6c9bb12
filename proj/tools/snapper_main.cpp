#include <iostream>

#include "snapper/cli.hpp"

int main(int argc, char** argv) { return snapper::run_cli(argc, argv, std::cout, std::cerr); }
