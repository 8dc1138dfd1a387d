#include <iostream>

#include "msmsens/cli.hpp"

int main(int argc, char** argv) { return msmsens::cli::main(argc, argv, std::cout, std::cerr); }
