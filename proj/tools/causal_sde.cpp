#include "causal_sde/cli.hpp"

int main(int argc, char** argv) { return causal_sde::cli::run(argc, argv); }
