#include "esure/cli.hpp"

int main(int argc, char** argv) { return esure::run_cli(argc, argv); }
