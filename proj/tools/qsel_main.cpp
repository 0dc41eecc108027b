#include <iostream>

#include "qsel/cli.hpp"

int main(int argc, char** argv) { return qsel::cli::run(argc, argv, std::cout, std::cerr); }
