#include "skatepose/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return skatepose::cli::run(argc, argv, std::cout, std::cerr); }
