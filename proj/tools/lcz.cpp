#include "lcz/commands.hpp"

int main(int argc, char** argv) { return lcz::run_cli(argc, argv); }
