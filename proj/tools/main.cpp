#include "privmarket/cli.hpp"

int main(int argc, char** argv) { return privmarket::run_cli(argc, argv); }
