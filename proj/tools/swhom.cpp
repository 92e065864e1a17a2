#include "swhom/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return swhom::cli::run(argc, argv, std::cout, std::cerr); }
