#include "cli.hpp"

int main(int argc, char** argv) { return afa::cli_dispatch(argc, argv); }
