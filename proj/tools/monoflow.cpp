#include "monoflow/cli.hpp"

int main(int argc, char** argv) { return monoflow::runCli(argc, argv); }
