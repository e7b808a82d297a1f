#include "wavaug/cli.hpp"

int main(int argc, char** argv) { return wavaug::run_cli(argc, argv); }
