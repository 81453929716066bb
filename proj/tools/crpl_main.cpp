#include "crpl/cli.hpp"

int main(int argc, char** argv) { return crpl::run_cli(argc, argv); }
