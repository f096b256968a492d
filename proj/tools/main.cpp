#include "peftser/cli.hpp"

int main(int argc, char** argv) { return peftser::cli::run(argc, argv); }
