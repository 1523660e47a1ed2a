#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return rodif::cli::main_entry(argc, argv, std::cout); }
