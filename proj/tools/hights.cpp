#include "hights/cli.hpp"

int main(int argc, char** argv) { return hights::cli::cli_main(argc, argv); }
