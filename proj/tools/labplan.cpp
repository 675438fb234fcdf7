#include <iostream>

#include "labplan/cli.hpp"

int main(int argc, char** argv) { return labplan::run_cli(argc, argv, std::cout, std::cerr); }
