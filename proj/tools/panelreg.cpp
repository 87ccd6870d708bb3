#include <iostream>

#include "panelreg/cli.hpp"

int main(int argc, char** argv) { return panelreg::run_cli(argc, argv, std::cout, std::cerr); }
