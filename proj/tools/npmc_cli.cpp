#include "npmc/cli.hpp"

int main(int argc, char** argv) { return npmc::cli_main(argc, argv); }
