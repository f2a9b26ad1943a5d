#include "bcib/cli.hpp"

int main(int argc, char** argv) { return bcib::run_cli(argc, argv); }
