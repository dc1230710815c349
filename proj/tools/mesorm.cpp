#include "mesorm/cli.hpp"

int main(int argc, char** argv) { return mesorm::run_cli(argc, argv); }
