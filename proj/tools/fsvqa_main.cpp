#include <iostream>

#include "fsvqa/cli.hpp"

int main(int argc, char** argv) { return fsvqa::cli::main(argc, argv, std::cout, std::cerr); }
