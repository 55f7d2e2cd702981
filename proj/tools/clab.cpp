#include <iostream>

#include "contrastlab/cli.hpp"

int main(int argc, char** argv) { return contrastlab::run_cli(argc, argv, std::cout, std::cerr); }
