#include "mhal/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return mhal::run_cli(argc, argv, std::cout, std::cerr); }
