#include <iostream>

#include "seqadj/cli.hpp"

int main(int argc, char** argv) { return seqadj::cli::run_cli(argc, argv, std::cout, std::cerr); }
