#include "speciation/commands.hpp"

int main(int argc, char** argv) { return speciation::run_cli(argc, argv); }
