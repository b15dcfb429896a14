#include "slcvae/cli.hpp"

int main(int argc, char** argv) { return slcvae::cli::run(argc, argv); }
