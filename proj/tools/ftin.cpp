#include "ftin/commands.hpp"

int main(int argc, char** argv) { return ftin::run_cli(argc, argv); }
