#include "rahmc/cli.hpp"

int main(int argc, char** argv) { return rahmc::cli::run(argc, argv); }
