#include <iostream>

#include "biasforge/cli.hpp"

int main(int argc, char** argv) { return biasforge::run_cli(argc, argv, std::cout, std::cerr); }
