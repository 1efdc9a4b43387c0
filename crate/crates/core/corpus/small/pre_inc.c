// Unordered shared accesses inside one expression.
uint8 INT0_EN @ 0x3D.0;
volatile uint8 a;
volatile uint8 b;
uint8 seen;

ISR(INT0_vect) {
    if (a > b) {
        seen = 1;
    }
}

void main() {
    INT0_EN = 1;
    while (b < 3) {
        a = ++b;
    }
}
