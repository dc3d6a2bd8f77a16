#include "stepalign/cli.hpp"

int main(int argc, char** argv) { return stepalign::cli::run(argc, argv); }
