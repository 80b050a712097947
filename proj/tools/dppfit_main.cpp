#include "dppfit/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return dppfit::run_cli(argc, argv, std::cout, std::cerr); }
