#include <iostream>

#include "fei/cli.hpp"

int main(int argc, char** argv) { return fei::run_cli(argc, argv, std::cout, std::cerr); }
