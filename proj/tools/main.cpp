#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return imdpm::cli::run(argc, argv, std::cout, std::cerr);
}
