#include "ionread/cli.hpp"

int main(int argc, char** argv) { return ionread::cli::run(argc, argv); }
