#include "nfgp/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return nfgp::cli::run(argc, argv, std::cout, std::cerr); }
