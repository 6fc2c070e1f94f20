#include <iostream>

#include "candlerl/cli.hpp"

int main(int argc, char** argv) { return candlerl::cli::run(argc, argv, std::cout, std::cerr); }
