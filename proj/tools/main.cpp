#include "mclp/cli.hpp"

int main(int argc, char** argv) { return mclp::run_cli(argc, argv); }
