#include "maskdiff/cli.hpp"

int main(int argc, char** argv) { return maskdiff::run_cli(argc, argv); }
