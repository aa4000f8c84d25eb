#include "ucast/cli.hpp"

int main(int argc, char** argv) { return ucast::run_cli(argc, argv); }
