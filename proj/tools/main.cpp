#include "treespec/cli.hpp"

int main(int argc, char** argv) { return treespec::run_cli(argc, argv); }
