#include "pipeline.hpp"

int main(int argc, char** argv) { return invloc::run_cli(argc, argv); }
