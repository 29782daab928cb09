#include "har/cli.hpp"

int main(int argc, char** argv) { return har::cli::dispatch(argc, argv); }
