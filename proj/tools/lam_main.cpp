#include "lam/cli.hpp"

int main(int argc, char** argv) { return lam::run_cli(argc, argv); }
