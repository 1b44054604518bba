#include "annot/cli.hpp"

int main(int argc, char** argv) { return annot::cli::run(argc, argv); }
