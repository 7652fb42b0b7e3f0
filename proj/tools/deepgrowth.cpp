#include "deepgrowth/cli.hpp"

int main(int argc, char** argv) { return dg::run_cli(argc, argv); }
