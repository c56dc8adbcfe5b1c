#include <iostream>

#include "robglm/cli.hpp"

int main(int argc, char** argv) { return robglm::run_cli(argc, argv, std::cout, std::cerr); }
