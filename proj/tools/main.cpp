#include "pwcc/cli.hpp"

int main(int argc, char** argv) { return pwcc::run_cli(argc, argv); }
