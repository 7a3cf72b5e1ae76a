#include <iostream>

#include "granet/cli.hpp"

int main(int argc, char** argv) { return granet::cli::run(argc, argv, std::cout, std::cerr); }
