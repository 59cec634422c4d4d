#include "faceoff/cli.hpp"

int main(int argc, char** argv) { return faceoff::cli::dispatch(argc, argv); }
