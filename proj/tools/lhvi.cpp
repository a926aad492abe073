#include "lhvi_cli.hpp"

int main(int argc, char** argv) { return lhvi::cli::run_cli(argc, argv); }
