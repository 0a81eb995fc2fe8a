#include "subdivfit/cli/app.hpp"

int main(int argc, char** argv)
{
    return subdivfit::cli::run(argc, argv);
}
