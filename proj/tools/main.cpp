#include "dnsfr/cli.hpp"

int main(int argc, char** argv) { return dnsfr::run_cli(argc, argv); }
