#include "cex/cli.hpp"

#include <iostream>

int main(int argc, char **argv)
{
    return cex::cli_main(argc, argv, std::cout, std::cerr);
}
