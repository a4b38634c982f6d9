#include <iostream>

#include "nphmm/commands.hpp"

int main(int argc, char** argv) { return nphmm::cli::run(argc, argv, std::cout, std::cerr); }
