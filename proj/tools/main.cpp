#include <iostream>

#include "lgi/cli.hpp"

int main(int argc, char** argv)
{
    return lgi::run_cli(argc, argv, std::cout, std::cerr);
}
