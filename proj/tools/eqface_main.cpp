#include "eqface/cli.hpp"

int main(int argc, char** argv) { return eqface::cli::run(argc, argv); }
