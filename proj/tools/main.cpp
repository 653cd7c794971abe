#include "cli.hpp"

int main(int argc, char** argv) { return tetrys::cli::run_cli(argc, argv); }
