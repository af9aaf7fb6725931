#include <iostream>

#include "slelab/cli.hpp"

int main(int argc, char** argv) { return slelab::run(argc, argv, std::cout, std::cerr); }
