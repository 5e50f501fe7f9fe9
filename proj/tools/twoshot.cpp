#include "twoshot/pipeline/cli.hpp"

int main(int argc, char** argv) { return twoshot::pipeline::run_cli(argc, argv); }
