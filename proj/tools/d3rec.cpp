#include "d3rec/cli.hpp"

int main(int argc, char** argv) { return d3rec::run_cli(argc, argv); }
