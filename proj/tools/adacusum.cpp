#include <adacusum/cli.hpp>

#include <iostream>

int main(int argc, char** argv) {
    return adacusum::cli::run(argc, argv, std::cout, std::cerr);
}
