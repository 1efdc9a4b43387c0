// Reference expressions for the well-formedness checker.
volatile uint8 a;
volatile uint8 b;
uint8 p;

uint8 f() { return a; }
uint8 g() { return b; }

ISR(TIMER0_OVF_vect) { a = b; b = a; }

void main() {
    a = ++b;
    a = f() + g();
    a = f() + 1;
    a = b = 0;
    a = p;
}
