#include <iostream>

#include "fgzsl/cli.hpp"

int main(int argc, char** argv) { return fgzsl::run_cli(argc, argv, {std::cout, std::cerr}); }
