#include "banditab/cli.hpp"

int main(int argc, char** argv) { return banditab::cli::run(argc, argv); }
