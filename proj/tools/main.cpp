#include "coinp/cli.hpp"

int main(int argc, char** argv) { return coinp::run_cli(argc, argv); }
