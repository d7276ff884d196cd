#include "facelab/cli.hpp"

int main(int argc, char** argv) { return facelab::parse_and_dispatch(argc, argv); }
