#include <iostream>

#include "lshrom/romctl.hpp"

int main(int argc, char** argv) { return lshrom::run_cli(argc, argv, std::cout, std::cerr); }
