#include "clap/cli.hpp"

int main(int argc, char** argv) { return clap::cli_main(argc, argv); }
