#include <iostream>

#include "facechannel/cli.hpp"

int main(int argc, char** argv) { return facechannel::run_cli(argc, argv, std::cout, std::cerr); }
