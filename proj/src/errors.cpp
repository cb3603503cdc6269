#include "mifgsm/errors.hpp"
