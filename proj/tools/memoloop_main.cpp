#include "memoloop/cli.hpp"

int main(int argc, char** argv) { return memoloop::run_cli(argc, argv); }
